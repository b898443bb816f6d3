//! The half-line safe set `χ₁ = (α, ∞)` under an input bound `|u_o + u| ≤ U_M`.
//!
//! The barrier is made proper in `χ₁` by adding the cutoff polynomial
//! `p_N(x) = ½(x−N)⁴ + ½(x−N)³|x−N|`, which vanishes identically for `x < N`:
//!
//! ```text
//! B₁(x) = 1/(x−α) + p_N(x),    h₁ = 1/B₁ = (x−α) / (1 + (x−α) p_N(x))
//! ```
//!
//! The saturated compensator `φ₁` tracks `J₂ = −γ h_s + c² B_s` clipped to
//! `±U_M`. `μ₁` is the level of `h_s` where `J₂ = U_M` and `D` the level
//! where `J₂ = −U_M`; both are levels of `h`, not positions in `x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Compensator, PreInput};
use crate::calculus::{Properness, ScalarField};
use crate::error::{Error, Result};

/// Cutoff used when none is given; far beyond anything a simulation reaches.
pub const DEFAULT_CUTOFF: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub alpha: f64,
    pub gamma: f64,
    pub c: f64,
    pub u_max: f64,
    /// The cutoff `N` of `p_N`.
    pub n_cut: f64,
    /// `(−U_M + √(U_M² + 4γc²)) / 2γ`.
    pub mu1: f64,
    /// `α + μ₁`.
    pub x_mu1: f64,
    /// `2 U_M / c²`.
    pub b1: f64,
    /// `(U_M + √(U_M² + 4γc²)) / 2γ`.
    pub d: f64,
}

pub fn derive_example1_params(
    alpha: f64,
    gamma: f64,
    c: f64,
    u_max: f64,
    n_cut: f64,
) -> Result<Example1Params> {
    if !alpha.is_finite() {
        return Err(Error::param("alpha", alpha, "must be finite"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", gamma, "must be positive and finite"));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::param("c", c, "must be non-negative and finite"));
    }
    if !(u_max > 0.0 && u_max.is_finite()) {
        return Err(Error::param("u_max", u_max, "must be positive and finite"));
    }
    let root = (u_max * u_max + 4.0 * gamma * c * c).sqrt();
    // Rationalised form of (−U + root)/2γ; no cancellation for small c.
    let mu1 = 2.0 * c * c / (u_max + root);
    let d = (u_max + root) / (2.0 * gamma);
    if !(n_cut > alpha + d) {
        return Err(Error::Construction(format!(
            "cutoff N = {n_cut} must exceed alpha + D = {}",
            alpha + d
        )));
    }
    Ok(Example1Params {
        alpha,
        gamma,
        c,
        u_max,
        n_cut,
        mu1,
        x_mu1: alpha + mu1,
        // (2U/c)/c rounds to 200 exactly at U = 1, c = 0.1; 2U/c² does not
        b1: 2.0 * u_max / c / c,
        d,
    })
}

impl Example1Params {
    /// `J₂(x) = −γ h_s(x) + c² B_s(x)`.
    pub fn j2(&self, x: f64) -> f64 {
        let h = x - self.alpha;
        -self.gamma * h + self.c * self.c / h
    }

    /// `e^{−b₁ μ₁}`.
    pub fn exit_cap(&self) -> f64 {
        (-self.b1 * self.mu1).exp()
    }
}

/// `p_N` and its first two derivatives. C³ at `x = N`.
pub fn p_n(x: f64, n_cut: f64) -> (f64, f64, f64) {
    // The two halves cancel exactly for x ≤ N; evaluating them there would
    // leave rounding residue of order (x−N)⁴.
    let d = x - n_cut;
    if d <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (d.powi(4), 4.0 * d.powi(3), 12.0 * d * d)
}

/// `h₁`, proper in `χ₁`.
#[derive(Debug, Clone, Copy)]
pub struct Example1Barrier {
    alpha: f64,
    n_cut: f64,
}

impl Example1Barrier {
    pub fn new(alpha: f64, n_cut: f64) -> Self {
        Self { alpha, n_cut }
    }

    fn scalar(&self, x: f64) -> (f64, f64, f64) {
        let s = x - self.alpha;
        let (p, dp, ddp) = p_n(x, self.n_cut);
        if p == 0.0 && dp == 0.0 && ddp == 0.0 {
            return (s, 1.0, 0.0);
        }
        let q = 1.0 + s * p;
        let dq = p + s * dp;
        let ddq = 2.0 * dp + s * ddp;
        let num = q - s * dq;
        (
            s / q,
            num / (q * q),
            (-s * ddq * q - 2.0 * num * dq) / (q * q * q),
        )
    }
}

impl ScalarField for Example1Barrier {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scalar(x[0]).0
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_element(1, self.scalar(x[0]).1)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.scalar(x[0]).2)
    }
    fn properness(&self) -> Properness {
        Properness::InSafeSet
    }
}

/// `B₁ = 1/(x−α) + p_N`, defined on `χ₁`.
#[derive(Debug, Clone, Copy)]
pub struct Example1Reciprocal {
    alpha: f64,
    n_cut: f64,
}

impl Example1Reciprocal {
    fn scalar(&self, x: f64) -> (f64, f64, f64) {
        let s = x - self.alpha;
        let (p, dp, ddp) = p_n(x, self.n_cut);
        (1.0 / s + p, -1.0 / (s * s) + dp, 2.0 / (s * s * s) + ddp)
    }
}

impl ScalarField for Example1Reciprocal {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scalar(x[0]).0
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_element(1, self.scalar(x[0]).1)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.scalar(x[0]).2)
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        x[0] > self.alpha
    }
    fn domain_note(&self) -> &str {
        "x > alpha"
    }
}

pub fn barrier_fields_example1(p: &Example1Params) -> (Example1Barrier, Example1Reciprocal) {
    (
        Example1Barrier::new(p.alpha, p.n_cut),
        Example1Reciprocal {
            alpha: p.alpha,
            n_cut: p.n_cut,
        },
    )
}

/// The saturated compensator `φ₁`, total on R.
///
/// Branches, first match wins (`h = h_s(x)`, `U = U_M`):
///
/// ```text
/// −u_o + U    h ≤ 0  or  max(u_o, J₂, U) ≠ U
/// −u_o − U    h > 0  and max(u_o, J₂, −U) = −U
/// −u_o + J₂   h > 0  and u_o < J₂ ∈ [−U, U]
/// 0           otherwise
/// ```
///
/// The interior branch takes the closed interval so that the total input is
/// continuous at `J₂ = ±U` (in particular at `x = x_{μ₁}`). With that, `φ₁`
/// has no discontinuities for continuous `u_o`.
#[derive(Debug, Clone)]
pub struct SaturatedExample1 {
    params: Example1Params,
    u_o: PreInput,
}

impl SaturatedExample1 {
    pub fn value(&self, x: f64) -> f64 {
        let p = &self.params;
        let u = p.u_max;
        let uo = self.u_o.first(&[x]);
        let h = x - p.alpha;
        if h <= 0.0 {
            return -uo + u;
        }
        let j2 = p.j2(x);
        if uo.max(j2).max(u) != u {
            -uo + u
        } else if uo.max(j2).max(-u) == -u {
            -uo - u
        } else if uo < j2 && (-u..=u).contains(&j2) {
            -uo + j2
        } else {
            0.0
        }
    }

    pub fn params(&self) -> &Example1Params {
        &self.params
    }
}

impl Compensator for SaturatedExample1 {
    fn input_dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.value(x[0]);
        Ok(())
    }
    fn label(&self) -> &str {
        "phi_1"
    }
}

pub fn example1_compensator(p: &Example1Params, u_o: PreInput) -> SaturatedExample1 {
    SaturatedExample1 { params: *p, u_o }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked() -> Example1Params {
        derive_example1_params(1.0, 1.0, 0.1, 1.0, DEFAULT_CUTOFF).unwrap()
    }

    #[test]
    fn derived_levels_solve_their_quadratics() {
        let p = worked();
        // J₂ = U at h = μ₁ and J₂ = −U at h = D
        assert_relative_eq!(p.j2(p.alpha + p.mu1), p.u_max, max_relative = 1e-12);
        assert_relative_eq!(p.j2(p.alpha + p.d), -p.u_max, max_relative = 1e-12);
        assert!((p.x_mu1 - 1.01).abs() < 5e-3);
        assert!((p.mu1 - 0.01).abs() < 5e-4);
        assert_eq!(p.b1, 200.0);
        assert!(p.mu1 > 0.0 && p.d > p.mu1);
    }

    #[test]
    fn limits_of_the_quadratic() {
        let p = derive_example1_params(1.0, 1e12, 0.1, 1.0, DEFAULT_CUTOFF).unwrap();
        assert!(p.mu1 < 1e-5);
        let p = derive_example1_params(1.0, 2.0, 0.0, 1.0, DEFAULT_CUTOFF).unwrap();
        assert_eq!(p.mu1, 0.0);
        assert_eq!(p.d, 0.5);
    }

    #[test]
    fn cutoff_must_clear_the_saturation_level() {
        assert!(matches!(
            derive_example1_params(1.0, 1.0, 0.1, 1.0, 1.5),
            Err(Error::Construction(_))
        ));
        assert!(derive_example1_params(1.0, 1.0, 0.1, 1.0, 7.0).is_ok());
        assert!(derive_example1_params(1.0, 0.0, 0.1, 1.0, 7.0).is_err());
        assert!(derive_example1_params(1.0, 1.0, 0.1, -1.0, 7.0).is_err());
    }

    #[test]
    fn cutoff_polynomial() {
        assert_eq!(p_n(3.0, 7.0), (0.0, 0.0, 0.0));
        assert_eq!(p_n(8.0, 7.0).0, 1.0);
        let (v, d1, d2) = p_n(9.0, 7.0);
        assert_eq!((v, d1, d2), (16.0, 32.0, 48.0));
        // the third derivative 12d + 12|d| is continuous at N
        let e = 1e-4;
        let left = (p_n(7.0, 7.0).2 - p_n(7.0 - e, 7.0).2) / e;
        let right = (p_n(7.0 + e, 7.0).2 - p_n(7.0, 7.0).2) / e;
        assert!(left.abs() < 1e-12 && right.abs() < 1e-2);
    }

    #[test]
    fn barrier_below_cutoff_is_shifted_identity() {
        let p = derive_example1_params(1.0, 1.0, 0.1, 1.0, 7.0).unwrap();
        let (h1, b1) = barrier_fields_example1(&p);
        for x in [-3.0, 0.5, 1.0, 2.0, 6.99] {
            assert_eq!(h1.value(&[x]), x - 1.0);
            assert_eq!(h1.gradient(&[x])[0], 1.0);
            assert_eq!(h1.hessian(&[x])[(0, 0)], 0.0);
        }
        for x in [1.5, 3.0, 6.5] {
            assert_relative_eq!(b1.value(&[x]), 1.0 / (x - 1.0));
        }
        // beyond the cutoff h₁ bends down and B₁ = 1/h₁
        for x in [7.5, 8.0, 9.0] {
            assert!(h1.value(&[x]) < x - 1.0);
            assert_relative_eq!(b1.value(&[x]) * h1.value(&[x]), 1.0, max_relative = 1e-14);
        }
        assert!(h1.value(&[30.0]) < 1e-3);
    }

    #[test]
    fn compensator_branches() {
        let p = worked();
        let phi = example1_compensator(&p, PreInput::constant(vec![-1.0]));
        // outside the safe set: full positive input
        for x in [-1.0, 0.9, 1.0] {
            assert_eq!(phi.value(x) - 1.0, 1.0);
        }
        // interior: total input J₂(2) = −1 + 0.01
        assert_relative_eq!(phi.value(2.0) - 1.0, -0.99, max_relative = 1e-14);
        // close to the boundary: saturated at +U
        assert_eq!(phi.value(1.005) - 1.0, 1.0);
        // far away: saturated at −U
        assert_eq!(phi.value(4.0) - 1.0, -1.0);
        // at x_μ₁ the interior and saturated branches meet
        assert_relative_eq!(phi.value(p.x_mu1) - 1.0, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn total_input_is_u_max_below_x_mu1() {
        let p = worked();
        let phi = example1_compensator(&p, PreInput::constant(vec![-1.0]));
        for k in 0..=1000 {
            let x = p.x_mu1 - 2.0 * k as f64 / 1000.0;
            let total = phi.value(x) - 1.0;
            assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        }
        for k in 0..=1000 {
            let x = p.alpha + p.d + 5.0 * k as f64 / 1000.0;
            assert_relative_eq!(phi.value(x) - 1.0, -1.0, max_relative = 1e-12);
        }
    }
}
