//! Generator calculus for control-affine Itô SDEs.
//!
//! A plant is the tuple `(f, g, σ, u_o)` of
//!
//! ```text
//! dx = { f(x) + g(x) (u_o(x) + u) } dt + σ(x) dw,   x ∈ Rⁿ, u ∈ Rᵐ, w ∈ Rᵈ
//! ```
//!
//! and the operators evaluated along it are
//!
//! ```text
//! L^D(u, u_o, y) = ∇y·f + ∇y·g (u + u_o)
//! L^I_σ(y)       = ½ tr[σ σᵀ ∇²y]
//! ℒ(u, u_o, y)   = L^D + L^I
//! H_σ(h)         = ½ |∇h σ|²
//! ```
//!
//! Maps write into caller-provided buffers so that the simulator can step
//! without allocating; matrices are stored column-major.

mod fd;
mod field;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use fd::{
    central_gradient, central_hessian, check_derivatives, fd_step, DerivativeCheck,
    GRADIENT_REL_TOL, HESSIAN_REL_TOL, SYMMETRY_REL_TOL,
};
pub use field::{
    exponential_fields, reciprocal_field, AffineField, Exponential, FieldJet, FieldRef, FnField,
    Properness, Reciprocal, ScalarField,
};

/// A map `Rⁿ → Rᵏ` writing its result into the output slice.
pub type VectorMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

/// The pre-input `u_o: Rⁿ → Rᵐ`.
#[derive(Clone)]
pub struct PreInput {
    m: usize,
    map: VectorMap,
}

impl PreInput {
    pub fn new(m: usize, map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            m,
            map: Arc::new(map),
        }
    }

    /// A constant pre-input, the only kind the worked examples use.
    pub fn constant(values: Vec<f64>) -> Self {
        let m = values.len();
        Self::new(m, move |_, out| out.copy_from_slice(&values))
    }

    /// Scalar plant and scalar input.
    pub fn scalar(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(1, move |x, out| out[0] = f(x[0]))
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.map)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        self.eval_into(x, out.as_mut_slice());
        out
    }

    /// First component; the examples have `m = 1`.
    pub fn first(&self, x: &[f64]) -> f64 {
        if self.m == 1 {
            let mut out = [0.0];
            self.eval_into(x, &mut out);
            out[0]
        } else {
            self.eval(x)[0]
        }
    }
}

impl fmt::Debug for PreInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreInput").field("m", &self.m).finish()
    }
}

/// The diffusion coefficient `σ: Rⁿ → R^{n×d}`.
#[derive(Clone)]
pub struct Diffusion {
    n: usize,
    d: usize,
    map: VectorMap,
}

impl Diffusion {
    /// `map` writes σ(x) column-major into a buffer of length `n·d`.
    pub fn new(
        n: usize,
        d: usize,
        map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            d,
            map: Arc::new(map),
        }
    }

    pub fn constant(n: usize, d: usize, column_major: Vec<f64>) -> Result<Self> {
        check_len("constant diffusion entries", n * d, column_major.len())?;
        Ok(Self::new(n, d, move |_, out| out.copy_from_slice(&column_major)))
    }

    /// `σ ≡ c` on a scalar plant with scalar noise.
    pub fn scalar(c: f64) -> Self {
        Self::new(1, 1, move |_, out| out[0] = c)
    }

    pub fn zero(n: usize, d: usize) -> Self {
        Self::new(n, d, |_, out| out.fill(0.0))
    }

    /// `x ↦ a σ(x)`.
    pub fn scaled(&self, a: f64) -> Self {
        let inner = self.map.clone();
        Self::new(self.n, self.d, move |x, out| {
            inner(x, out);
            out.iter_mut().for_each(|v| *v *= a);
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn noise_dim(&self) -> usize {
        self.d
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.map)(x, out)
    }

    pub fn matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_len("state", self.n, x.len())?;
        let mut out = DMatrix::zeros(self.n, self.d);
        self.eval_into(x, out.as_mut_slice());
        Ok(out)
    }

    /// `L_σ y(x) = ∇y(x) σ(x)`, a row of length `d`.
    pub fn lie(&self, y: &dyn ScalarField, x: &[f64]) -> Result<DVector<f64>> {
        check_point(self.n, y, x)?;
        let sigma = self.matrix(x)?;
        Ok(sigma.tr_mul(&y.gradient(x)))
    }

    /// `L^I_σ(y) = ½ tr[σσᵀ ∇²y]`.
    pub fn ito_correction(&self, y: &dyn ScalarField, x: &[f64]) -> Result<f64> {
        check_point(self.n, y, x)?;
        let sigma = self.matrix(x)?;
        let hess = y.hessian(x);
        // tr[σσᵀH] = Σ_k σ_kᵀ H σ_k over the noise columns.
        let value = sigma
            .column_iter()
            .map(|col| col.dot(&(&hess * col)))
            .sum::<f64>();
        Ok(0.5 * value)
    }

    /// `H_σ(h) = ½ (L_σ h)(L_σ h)ᵀ`.
    pub fn quadratic(&self, h: &dyn ScalarField, x: &[f64]) -> Result<f64> {
        let l = self.lie(h, x)?;
        Ok(0.5 * l.norm_squared())
    }
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffusion")
            .field("n", &self.n)
            .field("d", &self.d)
            .finish()
    }
}

/// A control-affine SDE `(f, g, σ, u_o)` with dimensions `(n, m, d)`.
#[derive(Clone)]
pub struct ControlAffineSde {
    n: usize,
    m: usize,
    drift: VectorMap,
    input_gain: VectorMap,
    diffusion: Diffusion,
    pre_input: PreInput,
}

impl fmt::Debug for ControlAffineSde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSde")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("d", &self.diffusion.d)
            .finish()
    }
}

impl ControlAffineSde {
    /// `drift` writes f(x) (length n); `input_gain` writes g(x) column-major
    /// (length n·m).
    pub fn new(
        n: usize,
        m: usize,
        drift: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        input_gain: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: Diffusion,
        pre_input: PreInput,
    ) -> Result<Self> {
        if n == 0 || m == 0 || diffusion.d == 0 {
            return Err(Error::Construction(
                "state, input and noise dimensions must be positive".into(),
            ));
        }
        check_len("diffusion rows", n, diffusion.n)?;
        check_len("pre-input length", m, pre_input.m)?;
        Ok(Self {
            n,
            m,
            drift: Arc::new(drift),
            input_gain: Arc::new(input_gain),
            diffusion,
            pre_input,
        })
    }

    /// Scalar plant `dx = {f(x) + g(x)(u_o(x) + u)} dt + σ(x) dw`.
    pub fn scalar(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        u_o: PreInput,
    ) -> Result<Self> {
        Self::new(
            1,
            1,
            move |x, out| out[0] = f(x[0]),
            move |x, out| out[0] = g(x[0]),
            Diffusion::new(1, 1, move |x, out| out[0] = sigma(x[0])),
            u_o,
        )
    }

    /// The integrator `dx = (u_o + u) dt + c dw` used by every worked example.
    pub fn integrator(c: f64, u_o: PreInput) -> Result<Self> {
        Self::new(
            1,
            1,
            |_, out| out[0] = 0.0,
            |_, out| out[0] = 1.0,
            Diffusion::scalar(c),
            u_o,
        )
    }

    /// Same drift, different diffusion (the σ′ system).
    pub fn with_diffusion(&self, diffusion: Diffusion) -> Result<Self> {
        check_len("diffusion rows", self.n, diffusion.n)?;
        Ok(Self {
            diffusion,
            ..self.clone()
        })
    }

    /// The σ′ = aσ system.
    pub fn with_scaled_diffusion(&self, a: f64) -> Self {
        Self {
            diffusion: self.diffusion.scaled(a),
            ..self.clone()
        }
    }

    pub fn with_pre_input(&self, pre_input: PreInput) -> Result<Self> {
        check_len("pre-input length", self.m, pre_input.m)?;
        Ok(Self {
            pre_input,
            ..self.clone()
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.d
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn pre_input(&self) -> &PreInput {
        &self.pre_input
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn input_gain_into(&self, x: &[f64], out: &mut [f64]) {
        (self.input_gain)(x, out)
    }

    pub fn f(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_len("state", self.n, x.len())?;
        let mut out = DVector::zeros(self.n);
        self.drift_into(x, out.as_mut_slice());
        Ok(out)
    }

    pub fn g(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_len("state", self.n, x.len())?;
        let mut out = DMatrix::zeros(self.n, self.m);
        self.input_gain_into(x, out.as_mut_slice());
        Ok(out)
    }

    pub fn sigma(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.diffusion.matrix(x)
    }

    pub fn u_o(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_len("state", self.n, x.len())?;
        Ok(self.pre_input.eval(x))
    }
}

fn check_point(n: usize, y: &dyn ScalarField, x: &[f64]) -> Result<()> {
    check_len("state", n, x.len())?;
    check_len("field dimension", n, y.dim())?;
    if !y.in_domain(x) {
        return Err(Error::outside(x, y.domain_note()));
    }
    Ok(())
}

/// `L_f y(x)`.
pub fn lie_f(sys: &ControlAffineSde, y: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    check_point(sys.n, y, x)?;
    Ok(y.gradient(x).dot(&sys.f(x)?))
}

/// `L_g y(x)`, a row of length `m`.
pub fn lie_g(sys: &ControlAffineSde, y: &dyn ScalarField, x: &[f64]) -> Result<DVector<f64>> {
    check_point(sys.n, y, x)?;
    Ok(sys.g(x)?.tr_mul(&y.gradient(x)))
}

/// `L^D_{f,g}(u, u_o(x), y(x)) = L_f y + L_g y (u + u_o)`.
pub fn drift_lie_derivative(
    sys: &ControlAffineSde,
    y: &dyn ScalarField,
    x: &[f64],
    u: &[f64],
) -> Result<f64> {
    check_point(sys.n, y, x)?;
    check_len("input", sys.m, u.len())?;
    let grad = y.gradient(x);
    let total = DVector::from_column_slice(u) + sys.u_o(x)?;
    Ok(grad.dot(&sys.f(x)?) + sys.g(x)?.tr_mul(&grad).dot(&total))
}

/// `L^I_σ(y(x))`.
pub fn ito_correction(sys: &ControlAffineSde, y: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    sys.diffusion.ito_correction(y, x)
}

/// `ℒ_{f,g,σ}(u, u_o(x), y(x))`.
pub fn generator(
    sys: &ControlAffineSde,
    y: &dyn ScalarField,
    x: &[f64],
    u: &[f64],
) -> Result<f64> {
    let terms = generator_terms(sys, y, x, u)?;
    Ok(terms.total())
}

/// `H_σ(h(x))`.
pub fn diffusion_quadratic(sys: &ControlAffineSde, h: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    sys.diffusion.quadratic(h, x)
}

/// The two parts of the generator, kept apart so callers can judge how
/// much cancellation a margin suffered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorTerms {
    pub drift: f64,
    pub ito: f64,
}

impl GeneratorTerms {
    pub fn total(&self) -> f64 {
        self.drift + self.ito
    }

    pub fn magnitude(&self) -> f64 {
        self.drift.abs() + self.ito.abs()
    }
}

pub fn generator_terms(
    sys: &ControlAffineSde,
    y: &dyn ScalarField,
    x: &[f64],
    u: &[f64],
) -> Result<GeneratorTerms> {
    Ok(GeneratorTerms {
        drift: drift_lie_derivative(sys, y, x, u)?,
        ito: ito_correction(sys, y, x)?,
    })
}
