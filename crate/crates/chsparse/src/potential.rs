//! Logarithmic double-well potential and its Moreau-Yosida regularization.
//!
//! The potential splits as f = f1 + f2 with
//!
//! ```text
//!   f1(r) = c1 ((1+r) ln(1+r) + (1-r) ln(1-r)),   r in (-1, 1)
//!   f2(r) = -c2 r^2
//! ```
//!
//! f1 is convex with f1'(r) -> ∓∞ as r -> ∓1, which confines the order
//! parameter to (-1, 1); f2 is the smooth concave part. Nonconvexity of the
//! sum requires c2 > c1 (then f''(0) = 2c1 - 2c2 < 0).
//!
//! The regularized derivative f1eps' is the Yosida approximation of the
//! monotone graph f1', built from the resolvent R_eps = (I + eps f1')^{-1}:
//!
//! ```text
//!   f1eps'(r) = (r - R_eps(r)) / eps
//!   f1eps(r)  = |r - R_eps(r)|^2 / (2 eps) + f1(R_eps(r))
//! ```
//!
//! It is monotone, Lipschitz with constant 1/eps, satisfies f1eps'(0) = 0,
//! |f1eps'| <= |f1'| on (-1,1), and 0 <= f1eps <= f1.
//!
//! Only the logarithmic form of f1 is implemented. Any convex lsc f1 whose
//! derivative blows up at ±1 would support the same machinery (the
//! resolvent solve only needs monotonicity of f1' and the bracket), but a
//! generic-potential trait is deliberately out of scope.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("potential parameters need c2 > c1 >= 0 for a nonconvex double well, got c1={c1}, c2={c2}")]
    NotDoubleWell { c1: f64, c2: f64 },
    #[error("derivative of the logarithmic part is only defined on (-1, 1), got r={0}")]
    OutsideDomain(f64),
    #[error("regularization parameter eps must lie in (0, 1], got {0}")]
    BadEps(f64),
    #[error("resolvent iteration failed to converge for s={s}, eps={eps} (this is a bug: the scalar map is strictly monotone)")]
    ResolventDiverged { s: f64, eps: f64 },
}

/// Coefficients of the logarithmic double well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    c1: f64,
    c2: f64,
}

impl PotentialParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self, PotentialError> {
        if !(c1 >= 0.0) || !(c2 > c1) {
            return Err(PotentialError::NotDoubleWell { c1, c2 });
        }
        Ok(Self { c1, c2 })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// f(r) = f1(r) + f2(r); finite on [-1, 1], +∞ outside.
    pub fn f_value(&self, r: f64) -> f64 {
        if r.abs() > 1.0 {
            return f64::INFINITY;
        }
        if r.abs() == 1.0 {
            return 2.0 * self.c1 * std::f64::consts::LN_2 - self.c2;
        }
        self.f1_value(r) - self.c2 * r * r
    }

    /// Convex logarithmic part; finite on [-1, 1], +∞ outside.
    pub fn f1_value(&self, r: f64) -> f64 {
        if r.abs() > 1.0 {
            return f64::INFINITY;
        }
        if r.abs() == 1.0 {
            return 2.0 * self.c1 * std::f64::consts::LN_2;
        }
        // representable r strictly inside (-1, 1) keeps 1 ± r >= ~1e-16,
        // so the x·ln(x) factors never hit the 0·(-inf) corner
        self.c1 * ((1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln())
    }

    /// d^order/dr^order of f = f1 + f2 for r strictly inside (-1, 1).
    pub fn f_deriv(&self, r: f64, order: u8) -> Result<f64, PotentialError> {
        if r.abs() >= 1.0 {
            return Err(PotentialError::OutsideDomain(r));
        }
        Ok(self.f1_deriv_unchecked(r, order) + self.f2_deriv(r, order))
    }

    /// d/dr of the convex part, r strictly inside (-1, 1).
    pub fn f1_deriv(&self, r: f64, order: u8) -> Result<f64, PotentialError> {
        if r.abs() >= 1.0 {
            return Err(PotentialError::OutsideDomain(r));
        }
        Ok(self.f1_deriv_unchecked(r, order))
    }

    fn f1_deriv_unchecked(&self, r: f64, order: u8) -> f64 {
        let om = 1.0 - r * r;
        match order {
            1 => self.c1 * ((1.0 + r) / (1.0 - r)).ln(),
            2 => 2.0 * self.c1 / om,
            3 => 4.0 * self.c1 * r / (om * om),
            _ => panic!("f1 derivatives implemented through order 3, asked for {order}"),
        }
    }

    pub fn f2_deriv(&self, r: f64, order: u8) -> f64 {
        match order {
            1 => -2.0 * self.c2 * r,
            2 => -2.0 * self.c2,
            3 => 0.0,
            _ => panic!("f2 derivatives implemented through order 3, asked for {order}"),
        }
    }

    /// Resolvent R_eps(s) = (I + eps f1')^{-1}(s): the unique r in (-1, 1)
    /// with r + eps f1'(r) = s. Safeguarded Newton with a bisection
    /// fallback on the bracket; the map is smooth and strictly increasing.
    pub fn resolvent(&self, s: f64, eps: f64) -> Result<f64, PotentialError> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(PotentialError::BadEps(eps));
        }
        if self.c1 == 0.0 {
            // f1' degenerates to 0 on (-1,1); the graph is the horizontal
            // segment plus vertical rays at ±1, and the resolvent clips
            return Ok(s.clamp(-1.0, 1.0));
        }
        let tol = 1e-12 * (1.0 + s.abs());
        let bound = 1.0 - 1e-15;
        let mut lo = -bound;
        let mut hi = bound;
        let g = |r: f64| r + eps * self.f1_deriv_unchecked(r, 1) - s;
        // the solution has the same sign as s; clamped start keeps Newton
        // inside the bracket from the first step
        let mut r = (s / (1.0 + 2.0 * eps * self.c1)).clamp(-0.9, 0.9);
        for _ in 0..200 {
            let gr = g(r);
            if gr.abs() <= tol {
                return Ok(r);
            }
            if gr > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let dg = 1.0 + eps * self.f1_deriv_unchecked(r, 2);
            let mut next = r - gr / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            r = next;
        }
        // the bracket may have collapsed to one ulp at near-saturation
        // arguments even though |g| is still above its (huge-slope) tol
        if (hi - lo).abs() <= 4.0 * f64::EPSILON {
            return Ok(0.5 * (lo + hi));
        }
        Err(PotentialError::ResolventDiverged { s, eps })
    }

    /// Yosida-regularized derivative f1eps'(r) = (r - R_eps(r))/eps,
    /// defined for every real r.
    pub fn yosida_deriv(&self, r: f64, eps: f64) -> Result<f64, PotentialError> {
        let res = self.resolvent(r, eps)?;
        Ok((r - res) / eps)
    }

    /// Second derivative of the Moreau envelope,
    /// f1eps''(r) = f1''(R) / (1 + eps f1''(R)); Lipschitz bound 1/eps.
    pub fn yosida_second(&self, r: f64, eps: f64) -> Result<f64, PotentialError> {
        let res = self.resolvent(r, eps)?;
        let f2d = self.f1_deriv_unchecked(res, 2);
        Ok(f2d / (1.0 + eps * f2d))
    }

    /// Moreau envelope f1eps(r) = inf_s { |r-s|^2/(2 eps) + f1(s) },
    /// evaluated through the resolvent.
    pub fn yosida_value(&self, r: f64, eps: f64) -> Result<f64, PotentialError> {
        let res = self.resolvent(r, eps)?;
        let d = r - res;
        Ok(d * d / (2.0 * eps) + self.f1_value(res))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PotentialParams {
        PotentialParams::new(1.0, 2.5).unwrap()
    }

    #[test]
    fn rejects_convex_parameters() {
        assert!(PotentialParams::new(1.0, 1.0).is_err());
        assert!(PotentialParams::new(2.0, 1.0).is_err());
        assert!(PotentialParams::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn values_at_landmarks() {
        let p12 = PotentialParams::new(1.0, 2.0).unwrap();
        assert_eq!(p12.f_value(0.0), 0.0);
        let expected = 2.0 * std::f64::consts::LN_2 - 2.0; // ≈ -0.61371
        assert!((p12.f_value(1.0) - expected).abs() < 1e-15);
        assert!((p12.f_value(-1.0) - expected).abs() < 1e-15);
        assert_eq!(p12.f_value(1.5), f64::INFINITY);
        assert_eq!(p12.f_value(-1.0000001), f64::INFINITY);
    }

    #[test]
    fn derivative_landmarks() {
        let p = p();
        assert_eq!(p.f_deriv(0.0, 1).unwrap(), 0.0);
        let f2 = p.f_deriv(0.0, 2).unwrap();
        assert!((f2 - (2.0 * 1.0 - 2.0 * 2.5)).abs() < 1e-15);
        assert!(f2 < 0.0, "nonconvex at the origin");
        assert!(p.f_deriv(1.0, 1).is_err());
        assert!(p.f_deriv(-1.2, 2).is_err());
    }

    /// Central finite difference, the oracle for every closed form here.
    fn central_diff(f: impl Fn(f64) -> f64, x: f64, s: f64) -> f64 {
        (f(x + s) - f(x - s)) / (2.0 * s)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = p();
        for &r in &[-0.8, -0.3, 0.0, 0.5, 0.9] {
            let fd1 = central_diff(|x| p.f_value(x), r, 1e-6);
            let d1 = p.f_deriv(r, 1).unwrap();
            assert!((d1 - fd1).abs() <= 1e-6 * d1.abs().max(1.0), "f' at {r}");

            let fd2 = central_diff(|x| p.f_deriv(x, 1).unwrap(), r, 1e-6);
            let d2 = p.f_deriv(r, 2).unwrap();
            assert!((d2 - fd2).abs() <= 1e-6 * d2.abs().max(1.0), "f'' at {r}");

            let fd3 = central_diff(|x| p.f_deriv(x, 2).unwrap(), r, 1e-6);
            let d3 = p.f_deriv(r, 3).unwrap();
            assert!((d3 - fd3).abs() <= 1e-6 * d3.abs().max(1.0), "f''' at {r}");
        }
    }

    /// Bisection to 1e-12; independent of the Newton path under test.
    fn resolvent_bisect(p: &PotentialParams, s: f64, eps: f64) -> f64 {
        let g = |r: f64| r + eps * p.f1_deriv(r, 1).unwrap() - s;
        let (mut lo, mut hi) = (-1.0 + 1e-15, 1.0 - 1e-15);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn resolvent_cases() {
        let p = PotentialParams::new(1.0, 2.5).unwrap();
        assert_eq!(p.resolvent(0.0, 0.5).unwrap(), 0.0);

        let r = p.resolvent(5.0, 0.1).unwrap();
        let oracle = resolvent_bisect(&p, 5.0, 0.1);
        assert!((r - oracle).abs() < 1e-11, "{r} vs oracle {oracle}");

        // nondecreasing in s
        let mut prev = f64::NEG_INFINITY;
        for k in -40..=40 {
            let s = k as f64 * 0.25;
            let r = p.resolvent(s, 0.05).unwrap();
            assert!(r >= prev - 1e-14);
            assert!(r.abs() < 1.0);
            prev = r;
        }

        assert!(p.resolvent(1.0, 0.0).is_err());
        assert!(p.resolvent(1.0, 1.5).is_err());
    }

    #[test]
    fn yosida_derivative_properties() {
        let p = p();
        for &eps in &[1.0, 0.1, 0.01, 0.001] {
            assert_eq!(p.yosida_deriv(0.0, eps).unwrap(), 0.0);
            // dominated by the exact derivative inside (-1,1)
            for &r in &[-0.9, -0.5, 0.2, 0.9] {
                let y = p.yosida_deriv(r, eps).unwrap();
                let exact = p.f1_deriv(r, 1).unwrap();
                assert!(y.abs() <= exact.abs() + 1e-9, "eps={eps} r={r}");
                assert!(y * exact >= 0.0, "same sign");
            }
            // Lipschitz constant 1/eps and monotone, on pairs
            let xs: Vec<f64> = (-30..=30).map(|k| k as f64 * 0.1).collect();
            for w in xs.windows(2) {
                let (a, b) = (w[0], w[1]);
                let ya = p.yosida_deriv(a, eps).unwrap();
                let yb = p.yosida_deriv(b, eps).unwrap();
                assert!(yb >= ya - 1e-9, "monotone");
                assert!((yb - ya).abs() <= (b - a).abs() / eps + 1e-9, "Lipschitz 1/eps");
            }
        }
    }

    #[test]
    fn yosida_envelope_properties() {
        let p = p();
        assert_eq!(p.yosida_value(0.0, 0.1).unwrap(), 0.0);
        for &eps in &[0.5, 0.1, 0.01] {
            for &r in &[-0.99, -0.5, 0.0, 0.5, 0.99, 1.5, -3.0] {
                let env = p.yosida_value(r, eps).unwrap();
                assert!(env >= -1e-14, "nonnegative");
                assert!(env <= p.f1_value(r) + 1e-12, "below f1 (with +inf outside)");
            }
        }
    }

    /// Dense scan plus golden-section refinement of
    /// inf_s |r-s|^2/(2eps) + f1(s); oracle for the envelope value.
    fn envelope_oracle(p: &PotentialParams, r: f64, eps: f64) -> f64 {
        let obj = |s: f64| (r - s) * (r - s) / (2.0 * eps) + p.f1_value(s);
        let mut best_s = 0.0;
        let mut best = f64::INFINITY;
        let n = 40_000;
        for k in 0..=n {
            let s = -1.0 + 2.0 * k as f64 / n as f64;
            let v = obj(s);
            if v < best {
                best = v;
                best_s = s;
            }
        }
        let (mut lo, mut hi) = ((best_s - 1e-4).max(-1.0), (best_s + 1e-4).min(1.0));
        let phi = 0.5 * (3.0 - 5f64.sqrt());
        for _ in 0..100 {
            let a = lo + phi * (hi - lo);
            let b = hi - phi * (hi - lo);
            if obj(a) < obj(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        obj(0.5 * (lo + hi))
    }

    #[test]
    fn yosida_value_matches_minimization_oracle() {
        let p = p();
        for &(r, eps) in &[(0.5, 0.1), (-0.8, 0.3), (2.0, 0.05), (0.0, 1.0), (1.2, 0.5)] {
            let v = p.yosida_value(r, eps).unwrap();
            let o = envelope_oracle(&p, r, eps);
            assert!((v - o).abs() <= 1e-8 * (1.0 + o.abs()), "r={r} eps={eps}: {v} vs {o}");
        }
    }

    #[test]
    fn yosida_consistency_as_eps_vanishes() {
        let p = p();
        for &r in &[-0.9, 0.0, 0.5] {
            let exact = p.f1_deriv(r, 1).unwrap();
            let mut prev_err = f64::INFINITY;
            for &eps in &[1e-1, 1e-2, 1e-3] {
                let err = (p.yosida_deriv(r, eps).unwrap() - exact).abs();
                assert!(err <= prev_err + 1e-12, "error decays monotonically at r={r}");
                prev_err = err;
            }
            assert!(prev_err <= 1e-2 * (1.0 + exact.abs()));
        }
    }
}
