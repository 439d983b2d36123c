//! Radial problem definitions.
//!
//! The polyharmonic equation Δ^{2m} u = f(u) on radial functions is written as
//! the first-order system over v_1 = u, v_{k+1} = Δ v_k (k = 1..2m-1), with
//! Δ v = v'' + (N-1) v'/r. The state interleaves (v_k, v_k') so the right-hand
//! side is a single banded sweep. All initial odd-order data vanish: the unique
//! smooth radial solution has v_k'(0) = 0 for every k.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible series-start radius.
pub const MAX_START_RADIUS: f64 = 1e-3;

/// Nonlinearity on the right-hand side of Δ^{2m} u = f(u).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Nonlinearity {
    /// f(u) = e^u.
    Exp,
    /// f(u) = -u^{-p}, singular at u = 0.
    NegPower { p: f64 },
}

impl Nonlinearity {
    /// Evaluate f(u). For `NegPower` a nonpositive argument is an error: it
    /// signals that the trajectory crossed the extinction threshold, not a bug.
    pub fn eval(&self, u: f64) -> Result<f64> {
        match *self {
            Nonlinearity::Exp => Ok(u.exp()),
            Nonlinearity::NegPower { p } => {
                if u <= 0.0 {
                    Err(Error::NonpositiveU { u })
                } else {
                    Ok(-u.powf(-p))
                }
            }
        }
    }

    /// df/du, used by the series start.
    pub fn derivative(&self, u: f64) -> Result<f64> {
        match *self {
            Nonlinearity::Exp => Ok(u.exp()),
            Nonlinearity::NegPower { p } => {
                if u <= 0.0 {
                    Err(Error::NonpositiveU { u })
                } else {
                    Ok(p * u.powf(-p - 1.0))
                }
            }
        }
    }

    pub fn is_exp(&self) -> bool {
        matches!(self, Nonlinearity::Exp)
    }
}

/// One radial initial value problem: dimension N, polyharmonic order m
/// (equation order 4m), nonlinearity, and the 2m even-order initial data
/// (v_1(0), ..., v_{2m}(0)) = (u(0), Δu(0), ..., Δ^{2m-1}u(0)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: u32,
    pub order: u32,
    pub nonlinearity: Nonlinearity,
    pub init: Vec<f64>,
}

impl ProblemSpec {
    /// The biharmonic exponential problem Δ²u = e^u with u(0) = alpha,
    /// Δu(0) = beta.
    pub fn exponential(dim: u32, alpha: f64, beta: f64) -> Self {
        ProblemSpec {
            dim,
            order: 1,
            nonlinearity: Nonlinearity::Exp,
            init: vec![alpha, beta],
        }
    }

    /// Δ^{2m} u = e^u with the full vector of even-order initial data.
    pub fn exponential_polyharmonic(dim: u32, order: u32, init: Vec<f64>) -> Self {
        ProblemSpec {
            dim,
            order,
            nonlinearity: Nonlinearity::Exp,
            init,
        }
    }

    /// The negative-power problem Δ²u = -u^{-p} with u(0) = a > 0, Δu(0) = b.
    pub fn neg_power(dim: u32, p: f64, a: f64, b: f64) -> Self {
        ProblemSpec {
            dim,
            order: 1,
            nonlinearity: Nonlinearity::NegPower { p },
            init: vec![a, b],
        }
    }

    /// Number of first-order state components, 4m.
    pub fn n_components(&self) -> usize {
        4 * self.order as usize
    }

    /// Initial Laplacian Δu(0); the shooting parameter for m = 1.
    pub fn beta(&self) -> f64 {
        self.init[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidSpec("dimension must be >= 1".into()));
        }
        if self.order < 1 {
            return Err(Error::InvalidSpec("order must be >= 1".into()));
        }
        if self.init.len() != 2 * self.order as usize {
            return Err(Error::InvalidSpec(format!(
                "init must have 2m = {} entries, got {}",
                2 * self.order,
                self.init.len()
            )));
        }
        if self.init.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("init data must be finite".into()));
        }
        if let Nonlinearity::NegPower { p } = self.nonlinearity {
            if !(p > 0.0) {
                return Err(Error::InvalidSpec("negative-power exponent p must be > 0".into()));
            }
            if !(self.init[0] > 0.0) {
                return Err(Error::InvalidSpec("negative-power problems require u(0) > 0".into()));
            }
        }
        Ok(())
    }
}

/// Radial state at radius r: y = (v_1, v_1', v_2, v_2', ..., v_{2m}, v_{2m}').
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub r: f64,
    pub y: Vec<f64>,
}

impl StateVector {
    pub fn new(r: f64, y: Vec<f64>) -> Self {
        StateVector { r, y }
    }

    /// u = v_1.
    pub fn u(&self) -> f64 {
        self.y[0]
    }

    /// Δ^{k} u = v_{k+1} for k = 0..2m-1.
    pub fn v(&self, k: usize) -> f64 {
        self.y[2 * (k - 1)]
    }
}

/// Right-hand side of the first-order system at r > 0.
///
/// dv_k/dr = v_k', and dv_k'/dr = v_{k+1} - (N-1) v_k'/r, the last slot driven
/// by f(v_1). The r = 0 form is handled by [`taylor_start`].
pub fn radial_rhs(spec: &ProblemSpec, state: &StateVector) -> Result<Vec<f64>> {
    let mut dy = vec![0.0; spec.n_components()];
    radial_rhs_into(spec, state.r, &state.y, &mut dy)?;
    Ok(dy)
}

pub(crate) fn radial_rhs_into(spec: &ProblemSpec, r: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radial_rhs requires r > 0, got {r}; use taylor_start at the origin"
        )));
    }
    let m2 = 2 * spec.order as usize;
    debug_assert_eq!(y.len(), 2 * m2);
    debug_assert_eq!(dy.len(), 2 * m2);
    let q = (spec.dim as f64 - 1.0) / r;
    for k in 0..m2 {
        let vp = y[2 * k + 1];
        let drive = if k + 1 < m2 {
            y[2 * k + 2]
        } else {
            spec.nonlinearity.eval(y[0])?
        };
        dy[2 * k] = vp;
        dy[2 * k + 1] = drive - q * vp;
    }
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonfiniteState { r });
    }
    Ok(())
}

/// Series start: state at 0 < r0 <= 1e-3 of the smooth solution with the given
/// even-order data, accurate to O(r0^6).
///
/// Each v_k(r) = v_k(0) + w_{k+1} r²/(2N) + w_{k+2} r⁴/(8N(N+2)) + O(r⁶) where
/// w_j = v_j(0) for j <= 2m, w_{2m+1} = f(u(0)) and w_{2m+2} = f'(u(0)) v_2(0).
pub fn taylor_start(spec: &ProblemSpec, r0: f64) -> Result<StateVector> {
    spec.validate()?;
    if !(r0 > 0.0 && r0 <= MAX_START_RADIUS) {
        return Err(Error::BadRadius {
            r0,
            max: MAX_START_RADIUS,
        });
    }
    let m2 = 2 * spec.order as usize;
    let n = spec.dim as f64;
    let mut w = spec.init.clone();
    w.push(spec.nonlinearity.eval(spec.init[0])?);
    w.push(spec.nonlinearity.derivative(spec.init[0])? * spec.init[1]);

    let r2 = r0 * r0;
    let r3 = r2 * r0;
    let r4 = r2 * r2;
    let c2 = 2.0 * n;
    let c4 = 8.0 * n * (n + 2.0);
    let mut y = vec![0.0; 2 * m2];
    for k in 0..m2 {
        let a2 = w[k + 1] / c2;
        let a4 = w[k + 2] / c4;
        y[2 * k] = w[k] + a2 * r2 + a4 * r4;
        y[2 * k + 1] = 2.0 * a2 * r0 + 4.0 * a4 * r3;
    }
    Ok(StateVector::new(r0, y))
}

/// The degree-4m polynomial p(D) with exact integer coefficients such that
/// Δ^{2m} = r^{-4m} p(D) on radial functions, D = d/dt, t = ln r.
///
/// p(D) = Π_{j=0}^{2m-1} (D - 2j)(D + N - 2 - 2j); p(k) is the eigenvalue of
/// Δ^{2m} on r^k for every integer k, and p(0) = 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorPolynomial {
    /// Coefficients in ascending powers of D; leading coefficient is 1.
    coeffs: Vec<i128>,
}

impl OperatorPolynomial {
    /// Coefficients in ascending powers of D.
    pub fn coefficients(&self) -> &[i128] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Exact evaluation at an integer point.
    pub fn eval_int(&self, k: i128) -> i128 {
        let mut acc = 0i128;
        for &c in self.coeffs.iter().rev() {
            acc = acc * k + c;
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c as f64;
        }
        acc
    }
}

/// Expand Π_{j=0}^{2m-1} (D - 2j)(D + N - 2 - 2j) with exact integer
/// arithmetic.
pub fn emden_fowler_polynomial(dim: u32, order: u32) -> OperatorPolynomial {
    assert!(dim >= 1 && order >= 1);
    let n = dim as i128;
    let mut coeffs: Vec<i128> = vec![1];
    for j in 0..2 * order as i128 {
        // multiply by (D - 2j)
        coeffs = mul_linear(&coeffs, -2 * j);
        // multiply by (D + N - 2 - 2j)
        coeffs = mul_linear(&coeffs, n - 2 - 2 * j);
    }
    OperatorPolynomial { coeffs }
}

/// Multiply an ascending-coefficient polynomial by (D + c).
fn mul_linear(coeffs: &[i128], c: i128) -> Vec<i128> {
    let mut out = vec![0i128; coeffs.len() + 1];
    for (i, &a) in coeffs.iter().enumerate() {
        out[i] += a * c;
        out[i + 1] += a;
    }
    out
}

/// The explicit separatrix solution of Δ²u = e^u in dimension 4 with u(0) = 0:
/// u(r) = -4 ln(1 + c r²), c = 1/(8√6), for which Δu(0) = -4/√6.
pub mod closed_form_n4 {
    /// c = 1/(8√6); the identity 384 c² = 1 makes u an exact solution.
    pub fn c() -> f64 {
        1.0 / (8.0 * 6.0_f64.sqrt())
    }

    /// Δu(0) = -4/√6, the critical initial Laplacian in dimension 4.
    pub fn beta0() -> f64 {
        -4.0 / 6.0_f64.sqrt()
    }

    /// ln_1p keeps full accuracy at small radii.
    pub fn u(r: f64) -> f64 {
        -4.0 * (c() * r * r).ln_1p()
    }

    pub fn du(r: f64) -> f64 {
        let c = c();
        let s = 1.0 + c * r * r;
        -8.0 * c * r / s
    }

    pub fn d2u(r: f64) -> f64 {
        let c = c();
        let cr2 = c * r * r;
        let s = 1.0 + cr2;
        8.0 * c * (cr2 - 1.0) / (s * s)
    }

    pub fn d3u(r: f64) -> f64 {
        let c = c();
        let cr2 = c * r * r;
        let s = 1.0 + cr2;
        16.0 * c * c * r * (3.0 - cr2) / (s * s * s)
    }

    pub fn d4u(r: f64) -> f64 {
        let c = c();
        let cr2 = c * r * r;
        let s = 1.0 + cr2;
        48.0 * c * c * (cr2 * cr2 - 6.0 * cr2 + 1.0) / (s * s * s * s)
    }

    /// Δu in dimension 4; finite at r = 0 where it equals 4 u''(0) = -32c.
    pub fn laplacian(r: f64) -> f64 {
        let c = c();
        let cr2 = c * r * r;
        let s = 1.0 + cr2;
        -16.0 * c * (cr2 + 2.0) / (s * s)
    }

    pub fn laplacian_prime(r: f64) -> f64 {
        let c = c();
        let cr2 = c * r * r;
        let s = 1.0 + cr2;
        32.0 * c * c * r * (cr2 + 3.0) / (s * s * s)
    }

    /// Δ²u in dimension 4, assembled as (Δu)'' + 3 (Δu)'/r with the 1/r
    /// division carried out analytically so the origin is regular.
    pub fn bilaplacian(r: f64) -> f64 {
        let c = c();
        let cr2 = c * r * r;
        let s = 1.0 + cr2;
        let s2 = s * s;
        let second = 96.0 * c * c * (1.0 - 4.0 * cr2 - cr2 * cr2) / (s2 * s2);
        let first_over_r = 96.0 * c * c * (cr2 + 3.0) / (s2 * s);
        second + first_over_r
    }

    /// Full 4-component state (u, u', Δu, (Δu)') at radius r.
    pub fn state(r: f64) -> Vec<f64> {
        vec![u(r), du(r), laplacian(r), laplacian_prime(r)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rhs_exponential_at_zero_state() {
        // e^0 = 1 drives only the last slot
        let spec = ProblemSpec::exponential(3, 0.0, 0.0);
        let state = StateVector::new(1.0, vec![0.0; 4]);
        let dy = radial_rhs(&spec, &state).unwrap();
        assert_eq!(dy, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rhs_neg_power_at_unit_state() {
        let spec = ProblemSpec::neg_power(3, 1.0, 1.0, 0.0);
        let state = StateVector::new(1.0, vec![1.0, 0.0, 0.0, 0.0]);
        let dy = radial_rhs(&spec, &state).unwrap();
        assert_eq!(dy, vec![0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn rhs_neg_power_rejects_nonpositive_u() {
        let spec = ProblemSpec::neg_power(3, 0.5, 1.0, 0.0);
        let state = StateVector::new(1.0, vec![-0.5, 0.0, 0.0, 0.0]);
        match radial_rhs(&spec, &state) {
            Err(Error::NonpositiveU { u }) => assert_eq!(u, -0.5),
            other => panic!("expected NonpositiveU, got {other:?}"),
        }
    }

    #[test]
    fn rhs_matches_symbolic_derivatives_of_n4_closed_form() {
        // With the exact closed-form state, slot 2k+1 of the RHS must return
        // the plain second derivative v_k'': v_{k+1} - (N-1) v_k'/r.
        let spec = ProblemSpec::exponential(4, 0.0, closed_form_n4::beta0());
        for &r in &[0.25, 1.0, 3.0, 10.0] {
            let state = StateVector::new(r, closed_form_n4::state(r));
            let dy = radial_rhs(&spec, &state).unwrap();
            assert_relative_eq!(dy[0], closed_form_n4::du(r), max_relative = 1e-13);
            assert_relative_eq!(dy[1], closed_form_n4::d2u(r), max_relative = 1e-12, epsilon = 1e-15);
            assert_relative_eq!(dy[2], closed_form_n4::laplacian_prime(r), max_relative = 1e-13);
            // (Δu)'' = Δ²u - 3 (Δu)'/r
            let lap2 = closed_form_n4::bilaplacian(r) - 3.0 * closed_form_n4::laplacian_prime(r) / r;
            assert_relative_eq!(dy[3], lap2, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn n1_reduction_drops_radial_terms_exactly() {
        // In dimension 1 the (N-1)/r terms vanish bit-exactly.
        let spec = ProblemSpec::neg_power(1, 0.5, 2.0, -1.0);
        let y = vec![2.0, 0.3, -1.0, 0.7];
        let state = StateVector::new(0.37, y.clone());
        let dy = radial_rhs(&spec, &state).unwrap();
        assert_eq!(dy[0], y[1]);
        assert_eq!(dy[1], y[2]);
        assert_eq!(dy[2], y[3]);
        assert_eq!(dy[3], -(2.0_f64.powf(-0.5)));
    }

    #[test]
    fn taylor_start_quartic_term() {
        // alpha = beta = 0 in dimension 3: u(r0) = r0^4 / 120 + O(r0^6)
        let spec = ProblemSpec::exponential(3, 0.0, 0.0);
        let s = taylor_start(&spec, 1e-3).unwrap();
        assert_relative_eq!(s.u(), 1e-12 / 120.0, epsilon = 1e-19);
    }

    #[test]
    fn taylor_start_limit_to_init() {
        let spec = ProblemSpec::exponential_polyharmonic(5, 2, vec![0.3, -1.0, 0.5, 2.0]);
        let s = taylor_start(&spec, 1e-9).unwrap();
        for k in 0..4 {
            assert_relative_eq!(s.y[2 * k], spec.init[k], epsilon = 1e-17);
            assert!(s.y[2 * k + 1].abs() < 1e-9);
        }
    }

    #[test]
    fn taylor_start_matches_n4_closed_form() {
        let spec = ProblemSpec::exponential(4, 0.0, closed_form_n4::beta0());
        let r0 = 1e-3;
        let s = taylor_start(&spec, r0).unwrap();
        let exact = closed_form_n4::state(r0);
        for (i, (got, want)) in s.y.iter().zip(&exact).enumerate() {
            assert!(
                (got - want).abs() < 1e-14,
                "component {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn taylor_start_rejects_bad_radius() {
        let spec = ProblemSpec::exponential(3, 0.0, 0.0);
        assert!(matches!(taylor_start(&spec, 0.0), Err(Error::BadRadius { .. })));
        assert!(matches!(taylor_start(&spec, 2e-3), Err(Error::BadRadius { .. })));
    }

    /// Eigenvalue of Δ^{2m} on r^k by iterating Δ r^k = k (k + N - 2) r^{k-2}.
    fn iterated_eigenvalue(dim: i128, order: u32, k: i128) -> i128 {
        let mut acc = 1i128;
        let mut kk = k;
        for _ in 0..2 * order {
            acc *= kk * (kk + dim - 2);
            kk -= 2;
        }
        acc
    }

    #[test]
    fn operator_polynomial_n3_m1() {
        let p = emden_fowler_polynomial(3, 1);
        // k^4 - 2k^3 - k^2 + 2k
        assert_eq!(p.coefficients(), &[0, 2, -1, -2, 1]);
        for k in 0..12 {
            assert_eq!(p.eval_int(k), k * (k + 1) * (k - 1) * (k - 2));
        }
    }

    #[test]
    fn operator_polynomial_n4_m1() {
        let p = emden_fowler_polynomial(4, 1);
        // k^4 - 4k^2
        assert_eq!(p.coefficients(), &[0, 0, -4, 0, 1]);
    }

    #[test]
    fn operator_polynomial_annihilates_constants() {
        for dim in 1..=10 {
            for order in 1..=3 {
                assert_eq!(emden_fowler_polynomial(dim, order).eval_int(0), 0);
            }
        }
    }

    #[test]
    fn operator_polynomial_matches_iterated_laplacian() {
        for dim in 1..=10u32 {
            for order in 1..=3u32 {
                let p = emden_fowler_polynomial(dim, order);
                assert_eq!(p.degree(), 4 * order as usize);
                for k in (4 * order as i128)..(4 * order as i128 + 21) {
                    assert_eq!(
                        p.eval_int(k),
                        iterated_eigenvalue(dim as i128, order, k),
                        "dim={dim} order={order} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(closed_form_n4::u(0.0), 0.0);
        assert_relative_eq!(closed_form_n4::laplacian(0.0), -4.0 / 6.0_f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(closed_form_n4::laplacian(0.0), 4.0 * closed_form_n4::d2u(0.0), epsilon = 1e-15);
    }

    #[test]
    fn closed_form_solves_equation() {
        for &r in &[0.5, 1.0, 5.0, 20.0] {
            let res = closed_form_n4::bilaplacian(r) - closed_form_n4::u(r).exp();
            assert!(res.abs() < 1e-12, "r={r}: residual {res}");
        }
        let mut worst: f64 = 0.0;
        let mut r = 0.0;
        while r <= 50.0 {
            let res = (closed_form_n4::bilaplacian(r) - closed_form_n4::u(r).exp()).abs();
            worst = worst.max(res);
            r += 0.05;
        }
        assert!(worst < 1e-10, "worst residual {worst}");
    }

    #[test]
    fn closed_form_derivative_consistency() {
        // finite-difference cross-check of the hand-expanded derivatives
        let h = 1e-5;
        for &r in &[0.7, 2.0, 9.0] {
            let fd1 = (closed_form_n4::u(r + h) - closed_form_n4::u(r - h)) / (2.0 * h);
            assert_relative_eq!(fd1, closed_form_n4::du(r), max_relative = 1e-9);
            let fd2 = (closed_form_n4::du(r + h) - closed_form_n4::du(r - h)) / (2.0 * h);
            assert_relative_eq!(fd2, closed_form_n4::d2u(r), max_relative = 1e-8);
            let fd3 = (closed_form_n4::d2u(r + h) - closed_form_n4::d2u(r - h)) / (2.0 * h);
            assert_relative_eq!(fd3, closed_form_n4::d3u(r), max_relative = 1e-7, epsilon = 1e-10);
            let fd4 = (closed_form_n4::d3u(r + h) - closed_form_n4::d3u(r - h)) / (2.0 * h);
            assert_relative_eq!(fd4, closed_form_n4::d4u(r), max_relative = 1e-6, epsilon = 1e-9);
            let fdlap = (closed_form_n4::laplacian(r + h) - closed_form_n4::laplacian(r - h)) / (2.0 * h);
            assert_relative_eq!(fdlap, closed_form_n4::laplacian_prime(r), max_relative = 1e-8);
            // Δu = u'' + 3u'/r in dimension 4
            assert_relative_eq!(
                closed_form_n4::laplacian(r),
                closed_form_n4::d2u(r) + 3.0 * closed_form_n4::du(r) / r,
                max_relative = 1e-13
            );
        }
    }
}
