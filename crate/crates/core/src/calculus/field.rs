use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which properness condition a field is declared to satisfy.
///
/// Properness is not machine-checked; constructors declare it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Properness {
    Undeclared,
    /// Superlevel sets `{x ∈ χ | h(x) ≥ L}` are compact.
    InSafeSet,
    /// Superlevel sets are compact in all of Rⁿ.
    Global,
}

/// A C² scalar field with closed-form gradient and Hessian.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `∇y(x)`, stored as a column.
    fn gradient(&self, x: &[f64]) -> DVector<f64>;

    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    fn in_domain(&self, _x: &[f64]) -> bool {
        true
    }

    fn domain_note(&self) -> &str {
        "all of R^n"
    }

    fn properness(&self) -> Properness {
        Properness::Undeclared
    }
}

pub type FieldRef = Arc<dyn ScalarField>;

impl<F: ScalarField + ?Sized> ScalarField for Arc<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).hessian(x)
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        (**self).in_domain(x)
    }
    fn domain_note(&self) -> &str {
        (**self).domain_note()
    }
    fn properness(&self) -> Properness {
        (**self).properness()
    }
}

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl FieldJet {
    /// Evaluates all three, refusing points outside the validity region.
    pub fn at(field: &dyn ScalarField, x: &[f64]) -> Result<Self> {
        if x.len() != field.dim() {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: field.dim(),
                got: x.len(),
            });
        }
        if !field.in_domain(x) {
            return Err(Error::outside(x, field.domain_note()));
        }
        Ok(Self {
            value: field.value(x),
            gradient: field.gradient(x),
            hessian: field.hessian(x),
        })
    }
}

/// `h(x) = w·x + offset`; `h_s(x) = x − α` is `AffineField::new(vec![1.0], -α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    weights: DVector<f64>,
    offset: f64,
}

impl AffineField {
    pub fn new(weights: Vec<f64>, offset: f64) -> Self {
        Self {
            weights: DVector::from_vec(weights),
            offset,
        }
    }
}

impl ScalarField for AffineField {
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.offset
    }
    fn gradient(&self, _x: &[f64]) -> DVector<f64> {
        self.weights.clone()
    }
    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::zeros(n, n)
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type HessianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A field assembled from closures.
#[derive(Clone)]
pub struct FnField {
    n: usize,
    value: ValueFn,
    gradient: GradientFn,
    hessian: HessianFn,
    domain: Option<(DomainFn, String)>,
    properness: Properness,
}

impl FnField {
    pub fn new(
        n: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            domain: None,
            properness: Properness::Undeclared,
        }
    }

    /// One-dimensional field from `y`, `y'` and `y''`.
    pub fn scalar(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        first: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            1,
            move |x| value(x[0]),
            move |x| DVector::from_element(1, first(x[0])),
            move |x| DMatrix::from_element(1, 1, second(x[0])),
        )
    }

    pub fn with_domain(
        mut self,
        note: impl Into<String>,
        inside: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some((Arc::new(inside), note.into()));
        self
    }

    pub fn with_properness(mut self, properness: Properness) -> Self {
        self.properness = properness;
        self
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("n", &self.n).finish()
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hessian)(x)
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        self.domain.as_ref().is_none_or(|(inside, _)| inside(x))
    }
    fn domain_note(&self) -> &str {
        self.domain
            .as_ref()
            .map_or("all of R^n", |(_, note)| note.as_str())
    }
    fn properness(&self) -> Properness {
        self.properness
    }
}

/// `B(x) = 1 / h(x)`, valid only where `h > 0`.
#[derive(Clone)]
pub struct Reciprocal {
    inner: FieldRef,
}

impl fmt::Debug for Reciprocal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Reciprocal")
    }
}

/// The reciprocal barrier `B = h⁻¹` of a zeroing barrier `h`.
pub fn reciprocal_field(h: FieldRef) -> Reciprocal {
    Reciprocal { inner: h }
}

impl Reciprocal {
    pub fn inner(&self) -> &FieldRef {
        &self.inner
    }
}

impl ScalarField for Reciprocal {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        1.0 / self.inner.value(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let h = self.inner.value(x);
        self.inner.gradient(x) * (-1.0 / (h * h))
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let h = self.inner.value(x);
        let g = self.inner.gradient(x);
        let outer = &g * g.transpose();
        outer * (2.0 / (h * h * h)) - self.inner.hessian(x) / (h * h)
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        self.inner.in_domain(x) && self.inner.value(x) > 0.0
    }
    fn domain_note(&self) -> &str {
        "{h > 0}"
    }
}

/// `x ↦ exp(rate · h(x))`.
#[derive(Clone)]
pub struct Exponential {
    inner: FieldRef,
    rate: f64,
}

impl fmt::Debug for Exponential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Exponential")
            .field("rate", &self.rate)
            .finish()
    }
}

impl Exponential {
    pub fn new(inner: FieldRef, rate: f64) -> Self {
        Self { inner, rate }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl ScalarField for Exponential {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.rate * self.inner.value(x)).exp()
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        self.inner.gradient(x) * (self.rate * self.value(x))
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let e = self.value(x);
        let g = self.inner.gradient(x);
        let outer = &g * g.transpose();
        (outer * (self.rate * self.rate) + self.inner.hessian(x) * self.rate) * e
    }
    fn in_domain(&self, x: &[f64]) -> bool {
        self.inner.in_domain(x)
    }
    fn domain_note(&self) -> &str {
        self.inner.domain_note()
    }
}

/// `(h_b, B_b) = (e^{b h}, e^{−b h})`.
pub fn exponential_fields(h: FieldRef, b: f64) -> Result<(Exponential, Exponential)> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", b, "must be positive and finite"));
    }
    Ok((Exponential::new(h.clone(), b), Exponential::new(h, -b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h_s() -> FieldRef {
        Arc::new(AffineField::new(vec![1.0], -1.0))
    }

    #[test]
    fn reciprocal_of_shifted_identity() {
        let b = reciprocal_field(h_s());
        let jet = FieldJet::at(&b, &[2.0]).unwrap();
        assert_eq!(jet.value, 1.0);
        assert_eq!(jet.gradient[0], -1.0);
        assert_eq!(jet.hessian[(0, 0)], 2.0);
    }

    #[test]
    fn reciprocal_refuses_nonpositive_h() {
        let b = reciprocal_field(h_s());
        assert!(matches!(
            FieldJet::at(&b, &[1.0]),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(FieldJet::at(&b, &[0.2]).is_err());
    }

    #[test]
    fn exponential_fields_at_zero_level() {
        let (hb, bb) = exponential_fields(h_s(), 3.0).unwrap();
        assert_eq!(hb.value(&[1.0]), 1.0);
        assert_eq!(bb.value(&[1.0]), 1.0);
    }

    #[test]
    fn exponential_value_at_example_level() {
        // e^{-1.98} by series summation, independent of f64::exp.
        let z: f64 = -200.0 * 0.00990;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= z / k as f64;
            sum += term;
        }
        let (_, bb) = exponential_fields(h_s(), 200.0).unwrap();
        let v = bb.value(&[1.00990]);
        assert_relative_eq!(v, sum, max_relative = 1e-9);
        assert!((v - 0.1381).abs() < 5e-5);
    }

    #[test]
    fn exponential_rejects_bad_rate() {
        for b in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                exponential_fields(h_s(), b),
                Err(Error::InvalidParameter { name: "b", .. })
            ));
        }
    }
}
