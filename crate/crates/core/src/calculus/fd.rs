//! Central finite differences, used only to cross-check the closed-form
//! derivatives that fields supply.

use nalgebra::{DMatrix, DVector};

use super::field::{FieldJet, ScalarField};
use crate::error::Result;

pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const HESSIAN_REL_TOL: f64 = 1e-4;
pub const SYMMETRY_REL_TOL: f64 = 1e-9;

/// `1e-5 · max(1, |x_i|)`.
pub fn fd_step(xi: f64) -> f64 {
    1e-5 * xi.abs().max(1.0)
}

/// Central differences of the value.
pub fn central_gradient(field: &dyn ScalarField, x: &[f64]) -> DVector<f64> {
    let mut probe = x.to_vec();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = fd_step(x[i]);
            probe[i] = x[i] + h;
            let up = field.value(&probe);
            probe[i] = x[i] - h;
            let down = field.value(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        }),
    )
}

/// Central differences of the analytic gradient; column `j` is `∂∇y/∂x_j`.
pub fn central_hessian(field: &dyn ScalarField, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut probe = x.to_vec();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let up = field.gradient(&probe);
        probe[j] = x[j] - h;
        let down = field.gradient(&probe);
        probe[j] = x[j];
        out.set_column(j, &((up - down) / (2.0 * h)));
    }
    out
}

/// Relative discrepancies between analytic and finite-difference derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub gradient_rel_err: f64,
    pub hessian_rel_err: f64,
    pub symmetry_rel_err: f64,
}

impl DerivativeCheck {
    pub fn passes(&self) -> bool {
        self.gradient_rel_err <= GRADIENT_REL_TOL
            && self.hessian_rel_err <= HESSIAN_REL_TOL
            && self.symmetry_rel_err <= SYMMETRY_REL_TOL
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / scale.max(1.0)
}

/// Compares a field's analytic derivatives against central differences at `x`.
///
/// Errors are max-norm discrepancies divided by `max(1, ‖analytic‖∞)`.
pub fn check_derivatives(field: &dyn ScalarField, x: &[f64]) -> Result<DerivativeCheck> {
    let jet = FieldJet::at(field, x)?;
    let fd_grad = central_gradient(field, x);
    let fd_hess = central_hessian(field, x);
    Ok(DerivativeCheck {
        gradient_rel_err: rel((&jet.gradient - fd_grad).amax(), jet.gradient.amax()),
        hessian_rel_err: rel((&jet.hessian - fd_hess).amax(), jet.hessian.amax()),
        symmetry_rel_err: rel(
            (&jet.hessian - jet.hessian.transpose()).amax(),
            jet.hessian.amax(),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{exponential_fields, reciprocal_field, AffineField, FnField};
    use std::sync::Arc;

    #[test]
    fn closed_forms_agree_with_differences() {
        let h = Arc::new(AffineField::new(vec![1.0], -1.0));
        let b = reciprocal_field(h.clone());
        let (hb, bb) = exponential_fields(h, 3.0).unwrap();
        for x in [1.2, 2.0, 4.5] {
            for f in [&b as &dyn ScalarField, &hb, &bb] {
                let check = check_derivatives(f, &[x]).unwrap();
                assert!(check.passes(), "{check:?} at {x}");
            }
        }
    }

    #[test]
    fn wrong_derivative_is_caught() {
        let bad = FnField::scalar(|x| x.sin(), |x| x.cos(), |x| x.sin());
        let check = check_derivatives(&bad, &[0.7]).unwrap();
        assert!(check.gradient_rel_err < GRADIENT_REL_TOL);
        assert!(check.hessian_rel_err > 1.0);
        assert!(!check.passes());
    }

    #[test]
    fn asymmetric_hessian_is_caught() {
        let f = FnField::new(
            2,
            |x| x[0] * x[1],
            |x| DVector::from_vec(vec![x[1], x[0]]),
            |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.9, 0.0]),
        );
        let check = check_derivatives(&f, &[0.5, 0.5]).unwrap();
        assert!(check.symmetry_rel_err > 0.05);
    }
}
