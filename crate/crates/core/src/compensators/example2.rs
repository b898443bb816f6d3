//! The interval safe set `χ₂ = (α−β, α+β)`.
//!
//! With `k = π/2β` and `θ(x) = k(x−α+β)`:
//!
//! ```text
//!        ⎧ k(x−α+β)     x ≤ α−β
//! h₂ =   ⎨ sin θ(x)     x ∈ χ₂
//!        ⎩ −k(x−α−β)    x ≥ α+β
//! ```
//!
//! `h₂` is C¹ at `∂χ₂` and proper on all of R. The compensators target the
//! total input `Φ₂(x) = c²k / tan θ(x)`.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Compensator, PreInput};
use crate::calculus::{reciprocal_field, FieldRef, Properness, Reciprocal, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example2Params {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub u_max: f64,
    /// `π²c² / 8β²`, the AS-ZCBF rate used by `φ_{N2}`.
    pub gamma2: f64,
    pub theta_mu2: f64,
    /// `πc² / 2βU_M`.
    pub tan_theta_mu2: f64,
    /// The two boundary-layer edges, left then right.
    pub x_mu2: [f64; 2],
    pub mu2: f64,
    /// `4βU_M / πc²`, the admissible rate outside `χ₂`.
    pub b21: f64,
    /// Minimum over the boundary layer of `4βU_M/(πc²|cos θ|) − sin θ/cos² θ`.
    pub b22: f64,
    pub b2: f64,
}

impl Example2Params {
    pub fn k(&self) -> f64 {
        FRAC_PI_2 / self.beta
    }

    pub fn theta(&self, x: f64) -> f64 {
        self.k() * (x - self.alpha + self.beta)
    }

    /// `Φ₂(x)`; infinite at `∂χ₂`, zero at `x = α`.
    pub fn phi2(&self, x: f64) -> f64 {
        let th = self.theta(x);
        self.c * self.c * self.k() * th.cos() / th.sin()
    }

    pub fn in_chi(&self, x: f64) -> bool {
        x > self.alpha - self.beta && x < self.alpha + self.beta
    }

    /// `e^{−b₂ μ₂}`.
    pub fn exit_cap(&self) -> f64 {
        (-self.b2 * self.mu2).exp()
    }
}

/// Minimum of `R(t) = √(1+t²)(A − t)` over `t ∈ (0, t_max]`.
///
/// `R'(t) ∝ At − 2t² − 1`, so `R` falls from `A` to a local minimum at the
/// smaller root of `2t² − At + 1` and rises after it.
fn layer_rate(a: f64, t_max: f64) -> f64 {
    let r = |t: f64| (1.0 + t * t).sqrt() * (a - t);
    let disc = a * a - 8.0;
    if disc >= 0.0 {
        let t_star = 2.0 / (a + disc.sqrt());
        if t_star < t_max {
            return r(t_star);
        }
    }
    r(t_max)
}

pub fn derive_example2_params(alpha: f64, beta: f64, c: f64, u_max: f64) -> Result<Example2Params> {
    if !alpha.is_finite() {
        return Err(Error::param("alpha", alpha, "must be finite"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", beta, "must be positive and finite"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param("c", c, "must be positive and finite"));
    }
    if !(u_max > 0.0 && u_max.is_finite()) {
        return Err(Error::param("u_max", u_max, "must be positive and finite"));
    }
    let k = FRAC_PI_2 / beta;
    let tan_mu = PI * c * c / (2.0 * beta * u_max);
    if !(tan_mu < SQRT_2) {
        return Err(Error::Construction(format!(
            "tan(theta(x_mu2)) = {tan_mu} must be below sqrt(2)"
        )));
    }
    let theta_mu = tan_mu.atan();
    let b21 = 4.0 * beta * u_max / (PI * c * c);
    let b22 = layer_rate(b21, tan_mu);
    Ok(Example2Params {
        alpha,
        beta,
        c,
        u_max,
        gamma2: PI * PI * c * c / (8.0 * beta * beta),
        theta_mu2: theta_mu,
        tan_theta_mu2: tan_mu,
        x_mu2: [alpha - beta + theta_mu / k, alpha + beta - theta_mu / k],
        mu2: theta_mu.sin(),
        b21,
        b22,
        b2: b21.min(b22),
    })
}

/// `h₂`.
#[derive(Debug, Clone, Copy)]
pub struct Example2Barrier {
    alpha: f64,
    beta: f64,
}

impl Example2Barrier {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    fn scalar(&self, x: f64) -> (f64, f64, f64) {
        let k = FRAC_PI_2 / self.beta;
        if x < self.alpha - self.beta {
            (k * (x - self.alpha + self.beta), k, 0.0)
        } else if x > self.alpha + self.beta {
            (-k * (x - self.alpha - self.beta), -k, 0.0)
        } else {
            let th = k * (x - self.alpha + self.beta);
            (th.sin(), k * th.cos(), -k * k * th.sin())
        }
    }
}

impl ScalarField for Example2Barrier {
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
        Properness::Global
    }
}

/// `(h₂, B₂ = 1/h₂)`.
pub fn barrier_fields_example2(p: &Example2Params) -> (Example2Barrier, Reciprocal) {
    let h = Example2Barrier::new(p.alpha, p.beta);
    let shared: FieldRef = Arc::new(h);
    (h, reciprocal_field(shared))
}

/// `φ_{N2}`, the closed-form min-norm compensator on `χ₂` with rate `γ₂`.
///
/// `I = k cos θ · u_o` and `J = c²k² cos² θ / sin θ`. When `I < J` the total
/// input is `Φ₂`; otherwise, and at `x = α`, the compensator is idle.
#[derive(Debug, Clone)]
pub struct MinNormExample2 {
    params: Example2Params,
    u_o: PreInput,
}

impl MinNormExample2 {
    /// `(I, J)` at `x`.
    pub fn terms(&self, x: f64) -> (f64, f64) {
        let p = &self.params;
        let k = p.k();
        let th = p.theta(x);
        let uo = self.u_o.first(&[x]);
        let cos = th.cos();
        (k * cos * uo, p.c * p.c * k * k * cos * cos / th.sin())
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        let p = &self.params;
        if !p.in_chi(x) {
            return Err(Error::outside(&[x], "chi_2"));
        }
        if x == p.alpha {
            return Ok(0.0);
        }
        let (i, j) = self.terms(x);
        if i >= j {
            Ok(0.0)
        } else {
            Ok(-self.u_o.first(&[x]) + p.phi2(x))
        }
    }
}

impl Compensator for MinNormExample2 {
    fn input_dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.value(x[0])?;
        Ok(())
    }
    fn label(&self) -> &str {
        "phi_N2"
    }
    fn validity(&self) -> &str {
        "chi_2"
    }
}

/// `φ₂`, the input-saturated `φ_{N2}`; total on R.
///
/// Outside `χ₂` the position decides: `+U_M` total input left of `χ₂` and
/// `−U_M` right of it. Inside, `Φ₂ ≥ U_M` saturates at `+U_M`, `Φ₂ ≤ −U_M` at
/// `−U_M`, and `φ_{N2}` applies in between. The total input is bounded by
/// `U_M` whenever `|u_o| ≤ U_M`.
///
/// Discontinuity: only at `x = α`, where `L_g h₂ = 0` and `φ_{N2}` switches
/// between its idle and active branches for `u_o ≠ 0`.
#[derive(Debug, Clone)]
pub struct SaturatedExample2 {
    inner: MinNormExample2,
}

impl SaturatedExample2 {
    pub fn value(&self, x: f64) -> f64 {
        let p = &self.inner.params;
        let uo = self.inner.u_o.first(&[x]);
        let u = p.u_max;
        if x <= p.alpha - p.beta {
            return -uo + u;
        }
        if x >= p.alpha + p.beta {
            return -uo - u;
        }
        let phi2 = p.phi2(x);
        if phi2 >= u {
            -uo + u
        } else if phi2 <= -u {
            -uo - u
        } else {
            // in χ₂ by the checks above
            self.inner.value(x).unwrap_or(0.0)
        }
    }
}

impl Compensator for SaturatedExample2 {
    fn input_dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.value(x[0]);
        Ok(())
    }
    fn label(&self) -> &str {
        "phi_2"
    }
}

/// `(φ_{N2}, φ₂)`.
pub fn example2_compensator(p: &Example2Params, u_o: PreInput) -> (MinNormExample2, SaturatedExample2) {
    let n2 = MinNormExample2 { params: *p, u_o };
    (n2.clone(), SaturatedExample2 { inner: n2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn worked() -> Example2Params {
        derive_example2_params(0.0, 1.0, 0.01, 1.0).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = worked();
        assert!((p.x_mu2[0] + 0.99990).abs() < 1e-5);
        assert!((p.x_mu2[1] - 0.99990).abs() < 1e-5);
        assert!((p.mu2 - 0.000157).abs() < 2e-6);
        assert!((p.b2 - 12732.4).abs() < 0.1);
        assert_relative_eq!(p.tan_theta_mu2, 1.5708e-4, max_relative = 1e-4);
        assert_relative_eq!(p.gamma2, PI * PI * 1e-4 / 8.0);
        // Φ₂ hits ±U_M exactly at the layer edges
        assert_relative_eq!(p.phi2(p.x_mu2[0]), 1.0, max_relative = 1e-9);
        assert_relative_eq!(p.phi2(p.x_mu2[1]), -1.0, max_relative = 1e-9);
        let (h, _) = barrier_fields_example2(&p);
        assert_relative_eq!(h.value(&[p.x_mu2[0]]), p.mu2, max_relative = 1e-9);
        assert_relative_eq!(h.value(&[p.x_mu2[1]]), p.mu2, max_relative = 1e-9);
    }

    #[test]
    fn layer_rate_matches_brute_force() {
        for (alpha, beta, c, u) in [
            (0.0, 1.0, 0.01, 1.0),
            (0.0, 1.0, 0.5, 1.0),
            (1.0, 2.0, 0.9, 1.5),
            (0.0, 1.0, 0.8, 0.9),
        ] {
            let p = derive_example2_params(alpha, beta, c, u).unwrap();
            let k = p.k();
            let mut best = f64::INFINITY;
            let n = 200_000;
            for i in 1..=n {
                let th = p.theta_mu2 * i as f64 / n as f64;
                let rhs = 2.0 * u / (c * c * k * th.cos()) - th.sin() / (th.cos() * th.cos());
                best = best.min(rhs);
            }
            assert!(p.b22 <= best + 1e-9 * best.abs());
            assert!(best - p.b22 < 1e-6 * best.abs(), "{} vs {}", p.b22, best);
        }
    }

    #[test]
    fn layer_rate_sits_just_below_outer_rate() {
        let p = worked();
        let a = p.b21;
        assert!(p.b22 < a);
        assert_relative_eq!(a - p.b22, 1.0 / (2.0 * a), max_relative = 1e-3);
    }

    #[test]
    fn tangent_constraint() {
        // tan θ_μ = πc²/2βU_M ≥ √2
        assert!(matches!(
            derive_example2_params(0.0, 1.0, 1.0, 1.0),
            Err(Error::Construction(_))
        ));
        assert!(derive_example2_params(0.0, 0.0, 0.01, 1.0).is_err());
        assert!(derive_example2_params(0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn large_input_bound_limit() {
        let mut last = 0.0;
        for u in [1e1, 1e3, 1e5, 1e7] {
            let p = derive_example2_params(0.0, 1.0, 0.01, u).unwrap();
            let prod = p.b2 * p.mu2;
            assert!(prod <= 2.0 && prod >= last);
            last = prod;
        }
        assert!((2.0 - last).abs() < 1e-6);
    }

    #[test]
    fn barrier_shape() {
        let h = Example2Barrier::new(0.0, 1.0);
        assert_eq!(h.value(&[0.0]), 1.0);
        assert!(h.value(&[-1.0]).abs() < 1e-15);
        assert!(h.value(&[1.0]).abs() < 1e-15);
        assert_relative_eq!(h.gradient(&[-3.0])[0], FRAC_PI_2);
        assert_relative_eq!(h.gradient(&[3.0])[0], -FRAC_PI_2);
        assert_relative_eq!(h.value(&[2.0]), -FRAC_PI_2);
        // C¹ across the edges
        let e = 1e-9;
        for edge in [-1.0, 1.0] {
            let l = h.gradient(&[edge - e])[0];
            let r = h.gradient(&[edge + e])[0];
            assert!((l - r).abs() < 1e-7);
        }
    }

    #[test]
    fn min_norm_branches() {
        let p = worked();
        let (n2, _) = example2_compensator(&p, PreInput::constant(vec![1.0]));
        assert_eq!(n2.value(0.0).unwrap(), 0.0);
        assert!(n2.value(1.0).is_err());
        assert!(n2.value(-2.0).is_err());
        // pushing right with u_o = 1 while cos θ < 0: active, total Φ₂
        let x = 0.5;
        let (i, j) = n2.terms(x);
        assert!(i < j);
        assert_relative_eq!(n2.value(x).unwrap() + 1.0, p.phi2(x), max_relative = 1e-12);
        // left half, cos θ > 0, u_o = 1 already safe
        assert_eq!(n2.value(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn saturated_branches() {
        let p = worked();
        let (_, phi) = example2_compensator(&p, PreInput::constant(vec![1.0]));
        assert_eq!(phi.value(-1.5) + 1.0, 1.0);
        assert_eq!(phi.value(-1.0) + 1.0, 1.0);
        assert_eq!(phi.value(1.0) + 1.0, -1.0);
        assert_eq!(phi.value(4.0) + 1.0, -1.0);
        assert_eq!(phi.value(-0.99995) + 1.0, 1.0);
        assert_eq!(phi.value(0.99995) + 1.0, -1.0);
        assert_relative_eq!(phi.value(0.5) + 1.0, p.phi2(0.5), max_relative = 1e-12);
    }

    #[test]
    fn sign_alignment_in_layer() {
        let p = worked();
        for side in 0..2 {
            for i in 1..1000 {
                let s = i as f64 / 1000.0;
                let x = if side == 0 {
                    p.alpha - p.beta + s * (p.x_mu2[0] - (p.alpha - p.beta))
                } else {
                    p.alpha + p.beta - s * (p.alpha + p.beta - p.x_mu2[1])
                };
                let th = p.theta(x);
                assert_eq!(th.cos().signum(), p.phi2(x).signum());
            }
        }
    }

    #[test]
    fn continuous_away_from_alpha() {
        let p = worked();
        let (_, phi) = example2_compensator(&p, PreInput::constant(vec![1.0]));
        let edges = [
            p.alpha - p.beta,
            p.alpha + p.beta,
            p.x_mu2[0],
            p.x_mu2[1],
        ];
        for e in edges {
            let l = phi.value(e - 1e-12);
            let r = phi.value(e + 1e-12);
            assert!((l - r).abs() < 1e-6, "jump at {e}: {l} vs {r}");
        }
        // the one jump, at x = α
        let l = phi.value(-1e-9);
        let r = phi.value(1e-9);
        assert!((l - r).abs() > 0.5);
    }
}
