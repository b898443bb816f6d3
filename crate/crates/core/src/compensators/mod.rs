//! Safety compensators `u = φ(x)` added on top of the pre-input `u_o`.
//!
//! [`MinNorm`] is the generic closed-form min-norm compensator; the
//! submodules hold the one-dimensional worked examples together with the
//! constants (μ, b, D, …) their certificates rely on.

mod example1;
mod example2;
mod motivating;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::calculus::{
    drift_lie_derivative, lie_g, reciprocal_field, ControlAffineSde, FieldRef, Reciprocal,
    ScalarField,
};
use crate::error::{Error, Result};

pub use crate::calculus::PreInput;
pub use example1::{
    barrier_fields_example1, derive_example1_params, example1_compensator, p_n,
    Example1Barrier, Example1Params, Example1Reciprocal, SaturatedExample1, DEFAULT_CUTOFF,
};
pub use example2::{
    barrier_fields_example2, derive_example2_params, example2_compensator, Example2Barrier,
    Example2Params, MinNormExample2, SaturatedExample2,
};
pub use motivating::{motivating_compensators, ReciprocalFilter, ZeroingFilter};

/// A state feedback `φ: Rⁿ → Rᵐ`.
pub trait Compensator: Send + Sync {
    fn input_dim(&self) -> usize;

    /// Writes `φ(x)` into `out` (length `m`).
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn label(&self) -> &str;

    fn validity(&self) -> &str {
        "all of R^n"
    }

    fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.input_dim());
        self.apply(x, out.as_mut_slice())?;
        Ok(out)
    }
}

pub type CompensatorRef = Arc<dyn Compensator>;

impl<C: Compensator + ?Sized> Compensator for Arc<C> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).apply(x, out)
    }
    fn label(&self) -> &str {
        (**self).label()
    }
    fn validity(&self) -> &str {
        (**self).validity()
    }
}

/// `φ ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroCompensator {
    m: usize,
}

impl ZeroCompensator {
    pub fn new(m: usize) -> Self {
        Self { m }
    }
}

impl Compensator for ZeroCompensator {
    fn input_dim(&self) -> usize {
        self.m
    }
    fn apply(&self, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn label(&self) -> &str {
        "zero"
    }
}

type FeedbackFn = Arc<dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync>;

/// A compensator from a closure.
#[derive(Clone)]
pub struct FnCompensator {
    m: usize,
    label: String,
    f: FeedbackFn,
}

impl FnCompensator {
    pub fn new(
        m: usize,
        label: impl Into<String>,
        f: impl Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        Self {
            m,
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnCompensator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCompensator")
            .field("label", &self.label)
            .finish()
    }
}

impl Compensator for FnCompensator {
    fn input_dim(&self) -> usize {
        self.m
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out)
    }
    fn label(&self) -> &str {
        &self.label
    }
}

/// Below this value of `L_g h (L_g h)ᵀ` the min-norm division is refused.
pub const SINGULAR_GAIN_SQ: f64 = 1e-300;

/// The closed-form min-norm compensator
///
/// ```text
/// I = L^D(0, u_o, h),   J = −γh + h² L^I_σ(B)
/// φ_N = −(I − J) / (L_g h L_g hᵀ) · L_g hᵀ   if I < J
///     = 0                                    if I ≥ J
/// ```
///
/// It makes `h` satisfy the almost-sure zeroing condition wherever
/// `L_g h ≠ 0`. When `L_g h` vanishes while `I < J` the transversality
/// condition has failed and evaluation returns [`Error::Singular`].
#[derive(Clone)]
pub struct MinNorm {
    sys: ControlAffineSde,
    h: FieldRef,
    b: Reciprocal,
    gamma: f64,
}

impl fmt::Debug for MinNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MinNorm")
            .field("gamma", &self.gamma)
            .finish()
    }
}

/// The quantities the min-norm branch decision is made on.
#[derive(Debug, Clone, PartialEq)]
pub struct MinNormTerms {
    pub i: f64,
    pub j: f64,
    pub lgh: DVector<f64>,
}

pub fn min_norm_compensator(sys: &ControlAffineSde, h: FieldRef, gamma: f64) -> Result<MinNorm> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", gamma, "must be positive and finite"));
    }
    if h.dim() != sys.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "field dimension",
            expected: sys.state_dim(),
            got: h.dim(),
        });
    }
    Ok(MinNorm {
        sys: sys.clone(),
        b: reciprocal_field(h.clone()),
        h,
        gamma,
    })
}

impl MinNorm {
    pub fn terms(&self, x: &[f64]) -> Result<MinNormTerms> {
        if !self.b.in_domain(x) {
            return Err(Error::outside(x, "{h > 0}"));
        }
        let zero = vec![0.0; self.sys.input_dim()];
        let i = drift_lie_derivative(&self.sys, &*self.h, x, &zero)?;
        let h = self.h.value(x);
        let j = -self.gamma * h + h * h * self.sys.diffusion().ito_correction(&self.b, x)?;
        let lgh = lie_g(&self.sys, &*self.h, x)?;
        Ok(MinNormTerms { i, j, lgh })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Compensator for MinNorm {
    fn input_dim(&self) -> usize {
        self.sys.input_dim()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let MinNormTerms { i, j, lgh } = self.terms(x)?;
        if i >= j {
            out.fill(0.0);
            return Ok(());
        }
        let gain_sq = lgh.norm_squared();
        if gain_sq < SINGULAR_GAIN_SQ {
            return Err(Error::Singular { point: x.to_vec() });
        }
        let scale = -(i - j) / gain_sq;
        for (o, l) in out.iter_mut().zip(lgh.iter()) {
            *o = scale * l;
        }
        Ok(())
    }

    fn label(&self) -> &str {
        "min-norm"
    }

    fn validity(&self) -> &str {
        "{h > 0}"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{generator, ito_correction, AffineField, Diffusion, FnField};
    use approx::assert_relative_eq;

    fn integrator(c: f64, u_o: f64) -> ControlAffineSde {
        ControlAffineSde::integrator(c, PreInput::constant(vec![u_o])).unwrap()
    }

    #[test]
    fn min_norm_on_motivating_plant() {
        let sys = integrator(0.1, -1.0);
        let h: FieldRef = Arc::new(AffineField::new(vec![1.0], -1.0));
        let phi = min_norm_compensator(&sys, h.clone(), 1.0).unwrap();
        let t = phi.terms(&[2.0]).unwrap();
        // I = u_o, J = −γh + h²·c²/h³ computed by hand.
        assert_relative_eq!(t.i, -1.0);
        assert_relative_eq!(t.j, -1.0 + 0.01, max_relative = 1e-14);
        let u = phi.eval(&[2.0]).unwrap()[0];
        assert_relative_eq!(u, 0.01, max_relative = 1e-12);
        // closed-loop drift equals J
        let drift = drift_lie_derivative(&sys, &*h, &[2.0], &[u]).unwrap();
        assert_relative_eq!(drift, t.j, max_relative = 1e-12);
    }

    #[test]
    fn min_norm_is_zero_when_pre_input_already_safe() {
        let sys = integrator(0.1, 2.0);
        let h: FieldRef = Arc::new(AffineField::new(vec![1.0], -1.0));
        let phi = min_norm_compensator(&sys, h, 1.0).unwrap();
        for x in [1.01, 1.5, 3.0, 10.0] {
            let t = phi.terms(&[x]).unwrap();
            if t.i >= t.j {
                assert_eq!(phi.eval(&[x]).unwrap()[0], 0.0);
            }
        }
        assert_eq!(phi.eval(&[3.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn min_norm_enforces_zeroing_condition() {
        let sys = integrator(0.3, -2.0);
        let h: FieldRef = Arc::new(AffineField::new(vec![1.0], -1.0));
        let b = reciprocal_field(h.clone());
        let gamma = 0.7;
        let phi = min_norm_compensator(&sys, h.clone(), gamma).unwrap();
        for k in 1..200 {
            let x = [1.0 + 0.05 * k as f64];
            let u = phi.eval(&x).unwrap();
            let lhs = generator(&sys, &*h, &x, u.as_slice()).unwrap();
            let hv = h.value(&x);
            let rhs = -gamma * hv
                + ito_correction(&sys, &*h, &x).unwrap()
                + hv * hv * ito_correction(&sys, &b, &x).unwrap();
            assert!(lhs - rhs >= -1e-9 * rhs.abs().max(1.0), "x = {x:?}");
        }
    }

    #[test]
    fn min_norm_surfaces_singularity() {
        // g = 0 everywhere: L_g h = 0 and a pre-input that violates the
        // transversality condition.
        let sys = ControlAffineSde::new(
            1,
            1,
            |_, out| out[0] = -1.0,
            |_, out| out[0] = 0.0,
            Diffusion::scalar(0.1),
            PreInput::constant(vec![0.0]),
        )
        .unwrap();
        let h: FieldRef = Arc::new(AffineField::new(vec![1.0], 0.0));
        let phi = min_norm_compensator(&sys, h, 1.0).unwrap();
        assert!(matches!(phi.eval(&[0.5]), Err(Error::Singular { .. })));
    }

    #[test]
    fn min_norm_in_two_dimensions() {
        // h = 1 − |x|², f = x, g = I₂, σ = 0.2 I₂, u_o = 0.
        let sys = ControlAffineSde::new(
            2,
            2,
            |x, out| out.copy_from_slice(x),
            |_, out| out.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]),
            Diffusion::constant(2, 2, vec![0.2, 0.0, 0.0, 0.2]).unwrap(),
            PreInput::constant(vec![0.0, 0.0]),
        )
        .unwrap();
        let h: FieldRef = Arc::new(
            FnField::new(
                2,
                |x| 1.0 - x[0] * x[0] - x[1] * x[1],
                |x| DVector::from_vec(vec![-2.0 * x[0], -2.0 * x[1]]),
                |_| nalgebra::DMatrix::from_diagonal_element(2, 2, -2.0),
            )
            .with_domain("R^2", |_| true),
        );
        let b = reciprocal_field(h.clone());
        let phi = min_norm_compensator(&sys, h.clone(), 2.0).unwrap();
        let x = [0.6, 0.5];
        let u = phi.eval(&x).unwrap();
        let hv = h.value(&x);
        let lhs = generator(&sys, &*h, &x, u.as_slice()).unwrap();
        let rhs = -2.0 * hv
            + ito_correction(&sys, &*h, &x).unwrap()
            + hv * hv * ito_correction(&sys, &b, &x).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        // the correction is aligned with L_g h = ∇h
        let grad = h.gradient(&x);
        assert_relative_eq!(u[0] * grad[1], u[1] * grad[0], epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_gain() {
        let sys = integrator(0.1, -1.0);
        let h: FieldRef = Arc::new(AffineField::new(vec![1.0], -1.0));
        assert!(min_norm_compensator(&sys, h.clone(), 0.0).is_err());
        assert!(min_norm_compensator(&sys, h, -1.0).is_err());
    }
}
