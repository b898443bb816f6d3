//! The two compensators of the scalar integrator `dx = (u_o + u) dt + c dw`
//! with safe set `{x > α}`: the deterministic zeroing filter `φ_{h_s}` and
//! the reciprocal-barrier filter `φ_{B_s}`, which diverges at `x = α`.

use super::{Compensator, PreInput};
use crate::error::{Error, Result};

/// `φ_{h_s}(x) = −u_o − γ h_s` when `u_o + γ h_s < 0`, else `0`.
#[derive(Debug, Clone)]
pub struct ZeroingFilter {
    alpha: f64,
    gamma: f64,
    u_o: PreInput,
}

impl ZeroingFilter {
    pub fn value(&self, x: f64) -> f64 {
        let h = x - self.alpha;
        let uo = self.u_o.first(&[x]);
        if uo + self.gamma * h < 0.0 {
            -uo - self.gamma * h
        } else {
            0.0
        }
    }
}

impl Compensator for ZeroingFilter {
    fn input_dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.value(x[0]);
        Ok(())
    }
    fn label(&self) -> &str {
        "phi_hs"
    }
}

/// `φ_{B_s}(x) = −u_o + Φ_s` when `u_o < Φ_s`, else `0`, with
/// `Φ_s = −γ h_s + c² B_s`. Defined on `x > α` only.
#[derive(Debug, Clone)]
pub struct ReciprocalFilter {
    alpha: f64,
    gamma: f64,
    c: f64,
    u_o: PreInput,
}

impl ReciprocalFilter {
    /// `Φ_s(x)`, the total input the filter imposes when active.
    pub fn target(&self, x: f64) -> f64 {
        let h = x - self.alpha;
        -self.gamma * h + self.c * self.c / h
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        if x <= self.alpha {
            return Err(Error::outside(&[x], "x > alpha"));
        }
        let uo = self.u_o.first(&[x]);
        let target = self.target(x);
        Ok(if uo < target { -uo + target } else { 0.0 })
    }
}

impl Compensator for ReciprocalFilter {
    fn input_dim(&self) -> usize {
        1
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out[0] = self.value(x[0])?;
        Ok(())
    }
    fn label(&self) -> &str {
        "phi_Bs"
    }
    fn validity(&self) -> &str {
        "x > alpha"
    }
}

/// `(φ_{h_s}, φ_{B_s})` for the integrator plant.
pub fn motivating_compensators(
    alpha: f64,
    gamma: f64,
    c: f64,
    u_o: PreInput,
) -> Result<(ZeroingFilter, ReciprocalFilter)> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma", gamma, "must be positive and finite"));
    }
    if !alpha.is_finite() {
        return Err(Error::param("alpha", alpha, "must be finite"));
    }
    if !c.is_finite() {
        return Err(Error::param("c", c, "must be finite"));
    }
    Ok((
        ZeroingFilter {
            alpha,
            gamma,
            u_o: u_o.clone(),
        },
        ReciprocalFilter {
            alpha,
            gamma,
            c,
            u_o,
        },
    ))
}
